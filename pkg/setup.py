from setuptools import setup, find_packages

with open('requirements.pmlm.txt', 'r') as f:
    requirements = [req.strip() for req in f.readlines() if req.strip()]
setup(
    name='pmlm',
    version='0.0.1',
    packages=find_packages('src'),
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: Apache License",
        "Operating System :: OS Independent",
    ],
    package_dir={'': 'src'},
    python_requires='>=3.10',
    install_requires=requirements,
    extras_require={'lab': ['colorlog~=6.8.2']},
    entry_points={'console_scripts': ['pmlm-lab = lab.cli:run']},
)
