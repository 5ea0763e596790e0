"""概率掩码语言模型（PMLM / u-PMLM）桌面级实现"""
