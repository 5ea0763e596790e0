"""概率掩码方案：先验、掩码采样与掩码模式概率"""
from pmlm.masking.prior import MaskingPrior, sample_ratio, log_mask_probability
from pmlm.masking.pattern import (MaskPattern, MaskWeight, EnumerationLimitException, sample_mask,
                                  mask_probability, enumerate_masks)
