from pydantic_settings import BaseSettings


class LabConfiguration(BaseSettings):
    """实验平台配置"""

    LAB_LOG_CONFIG: str = 'log_config.json'
    """日志配置文件路径"""

    LAB_LOG_DIR: str = '../logs'
    """日志目录"""

    LAB_CHECKPOINT_EVERY: int = 200
    """每训练多少步保存一次检查点"""

    LAB_LOG_EVERY: int = 50
    """每训练多少步输出一次损失"""


LabConfig = LabConfiguration()
