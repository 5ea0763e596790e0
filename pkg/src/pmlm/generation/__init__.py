"""任意顺序生成"""
from pmlm.generation.model import (GenerationOrder, GenerationConstraints, GenerationStep, GenerationTrace,
                                   SamplerSpec)
from pmlm.generation.sampler import sample_token, ExhaustedCandidatesException, SPECIAL_IDS
from pmlm.generation.generator import (generate, generate_left_to_right, generate_causal, replay_trace,
                                       InvalidOrderException)
