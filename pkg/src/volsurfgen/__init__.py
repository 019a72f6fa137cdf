"""volsurfgen: synthetic Heston option data, classical volatility surfaces,
and a shallow arbitrage-penalized GAN surface generator."""

__version__ = "0.1.0"

from .blackscholes import BsQuote, bs_call, implied_vol_brent
from .heston import CosConfig, HestonParams, cos_call_price, cos_put_price, heston_charfn

__all__ = [
    "__version__",
    "BsQuote",
    "bs_call",
    "implied_vol_brent",
    "CosConfig",
    "HestonParams",
    "cos_call_price",
    "cos_put_price",
    "heston_charfn",
]
