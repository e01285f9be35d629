import os
from dotenv import load_dotenv

load_dotenv()

ENV_PREFIX = "GLOSSREMOVE_"


def _env(name: str, default, cast=str):
    raw = os.getenv(ENV_PREFIX + name)
    if raw is None or raw == "":
        return default
    return cast(raw)


class Config:
    """Engine configuration"""
    LOG_LEVEL = _env("LOG_LEVEL", "INFO")
    THREADS = _env("THREADS", 1, int)
    SEED = _env("SEED", 7, int)

    # Rasterization
    ALPHA_MIN = _env("ALPHA_MIN", 1.0 / 255.0, float)
    T_STOP = _env("T_STOP", 1e-3, float)
    SIGMA_CUTOFF = _env("SIGMA_CUTOFF", 3.0, float)
    TILE_SIZE = _env("TILE_SIZE", 16, int)
    EMPTY_ALPHA = 1e-3  # below this accumulated alpha a pixel has no surface

    # Ray tracing
    LEAF_SIZE = _env("LEAF_SIZE", 4, int)
    T_EPS = _env("T_EPS", 1e-4, float)
    TRACE_SH = _env("TRACE_SH", "true").lower() in ("1", "true", "yes")

    # Shading and filtering
    M_THRESH = _env("M_THRESH", 0.5, float)
    ENV_EDGE = _env("ENV_EDGE", 64, int)
    ENV_LEVELS = _env("ENV_LEVELS", 5, int)
    PYRAMID_LEVELS = 5
    TRANSLATE_C0 = _env("TRANSLATE_C0", 1.0, float)
    TRANSLATE_C1 = _env("TRANSLATE_C1", 0.0, float)

    # Lighting-aware masking and removal
    TAU = _env("TAU", 0.1, float)
    LABEL_THRESH = _env("LABEL_THRESH", 0.5, float)
    DEPTH_GAP = _env("DEPTH_GAP", 1e-2, float)
    MASK_ALPHA_MIN = _env("MASK_ALPHA_MIN", 1e-2, float)
    STRIDE = _env("STRIDE", 1, int)
    INPAINTER = _env("INPAINTER", "baseline")
    FALLBACK_BASELINE = _env("FALLBACK_BASELINE", "false").lower() in ("1", "true", "yes")
    DIFFUSION_TOL = 1e-4
    DIFFUSION_MAX_ITERS = 10_000
    INPAINTER_TIMEOUT = _env("INPAINTER_TIMEOUT", 600, int)  # seconds

    # Refinement
    STEPS = _env("STEPS", 500, int)
    LR_MATERIAL = _env("LR_MATERIAL", 1e-2, float)
    LR_SH = _env("LR_SH", 1e-3, float)
    DIVERGENCE_FACTOR = 10.0

    @classmethod
    def flag_default(cls, flag: str, default):
        """Default for a CLI flag, overridable by GLOSSREMOVE_<FLAG>"""
        name = flag.lstrip("-").replace("-", "_").upper()
        cast = type(default) if default is not None else str
        if cast is bool:
            raw = os.getenv(ENV_PREFIX + name)
            return default if raw is None else raw.lower() in ("1", "true", "yes")
        return _env(name, default, cast)

    @classmethod
    def validate(cls):
        """Validate configured constants"""
        if not 0.0 < cls.ALPHA_MIN < 1.0:
            raise ValueError("ALPHA_MIN must lie in (0, 1)")
        if not 0.0 < cls.T_STOP < 1.0:
            raise ValueError("T_STOP must lie in (0, 1)")
        if cls.TILE_SIZE < 1 or cls.LEAF_SIZE < 1:
            raise ValueError("TILE_SIZE and LEAF_SIZE must be positive")
        if cls.THREADS < 1:
            raise ValueError("THREADS must be at least 1")
        if cls.TAU < 0.0:
            raise ValueError("TAU must be nonnegative")
        if not 0.0 < cls.LABEL_THRESH < 1.0:
            raise ValueError("LABEL_THRESH must lie in (0, 1)")
        if cls.ENV_LEVELS < 1 or cls.ENV_EDGE % (2 ** (cls.ENV_LEVELS - 1)) != 0:
            raise ValueError("ENV_EDGE must be divisible by 2^(ENV_LEVELS-1)")
