from .ber import BerConfig, BerResult, run_ber, theoretical_ber
from .modulation import Constellation, Modulation
from .oracles import OracleEstimate, oracle_estimation_mse, oracle_isl, oracle_sinr

__all__ = [
    "BerConfig",
    "BerResult",
    "Constellation",
    "Modulation",
    "OracleEstimate",
    "oracle_estimation_mse",
    "oracle_isl",
    "oracle_sinr",
    "run_ber",
    "theoretical_ber",
]
