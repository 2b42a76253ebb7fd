"""Wavelet-domain spread-spectrum watermarking with Golay-Rudin-Shapiro filter banks."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CalibrationError,
    ConfigError,
    DegenerateError,
    DimensionError,
    InsufficientDataError,
    PGMParseError,
    UnsupportedFormatError,
    WatermarkError,
)
from .image_io import Image, load, quantize, read_pgm, save, write_pgm  # noqa: E402
from .filterbank import (  # noqa: E402
    STANDARD_NAMES,
    FilterPair,
    WaveletSpec,
    grs_kernel,
    grs_wavelet,
    is_complementary,
    standard_wavelet,
)
from .dwt2d import SubbandSet, dwt2, idwt2  # noqa: E402
from .watermark import (  # noqa: E402
    EmbeddingParams,
    Watermark,
    correlate,
    correlation,
    embed,
    estimate_watermark,
    generate_watermark,
)
from .attacks import AttackSpec, apply_attack, jpeg2000_like_attack, jpeg_like_attack  # noqa: E402
from .metrics import histogram, js_divergence, jsd_table, kl_divergence, uqi  # noqa: E402
from .detector import (  # noqa: E402
    DetectorModel,
    build_empirical_pdf,
    calibrate,
    decide,
    lilliefors,
    np_threshold,
)

__all__ = [name for name in dir() if not name.startswith("_")]
