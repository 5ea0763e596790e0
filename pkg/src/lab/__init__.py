"""实验平台：语料、训练、检查点与命令行"""
