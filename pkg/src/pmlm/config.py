"""配置类，这些配置可以被这个包下的所有代码公用，同时修改配置不影响业务逻辑"""
from pydantic_settings import BaseSettings

PAD_ID = 0
"""填充符 [PAD] 的固定编号"""
MASK_ID = 1
"""掩码符 [MASK] 的固定编号"""
UNK_ID = 2
"""未登录符 [UNK] 的固定编号"""

SPECIAL_TOKENS = ("[PAD]", "[MASK]", "[UNK]")
"""特殊符号，按编号排列"""


class PmlmConfiguration(BaseSettings):
    """数值与枚举相关的配置"""

    PMLM_MASK_ENUMERATION_LIMIT: int = 16
    """枚举全部掩码模式时允许的最大序列长度"""

    PMLM_EXACT_LOSS_LIMIT: int = 8
    """精确计算 PMLM 期望损失时允许的最大序列长度（需要 2^N 次前向）"""

    PMLM_PERMUTATION_LIMIT: int = 6
    """枚举全部排列时允许的最大序列长度（需要 N! 个排列）"""

    PMLM_EQUIVALENCE_TOLERANCE: float = 1e-9
    """等价性验证允许的最大绝对误差"""

    PMLM_LAYER_NORM_EPS: float = 1e-12
    """层归一化的数值稳定项"""

    PMLM_INIT_STD: float = 0.02
    """权重矩阵初始化的标准差"""

    PMLM_RELATIVE_WINDOW: int = 8
    """相对位置编码默认的最大相对距离"""


PmlmConfig = PmlmConfiguration()
