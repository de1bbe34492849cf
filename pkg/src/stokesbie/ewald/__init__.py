from .config import EwaldConfig
from .fourier import FourierGridState, fourier_pipeline, gather

__all__ = ["EwaldConfig", "FourierGridState", "fourier_pipeline", "gather"]
