"""
Exception hierarchy shared by every module
"""
from typing import List, Optional


class GlossRemoveError(Exception):
    """Base class for data errors (CLI exit code 2)"""


class SceneFormatError(GlossRemoveError):
    """Scene directory could not be decoded"""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ChecksumError(SceneFormatError):
    """Attribute blob checksum does not match its contents"""

    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(
            "attributes.bin",
            f"checksum mismatch (stored {expected:#018x}, computed {actual:#018x})"
        )


class SceneValidationError(GlossRemoveError):
    """Scene violates one or more type invariants"""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        preview = "; ".join(self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"invalid scene: {preview}{more}")


class ImageFormatError(GlossRemoveError):
    """PFM/PNG file could not be decoded"""


class NetworkLoadError(GlossRemoveError):
    """Translation network weights do not match their manifest"""


class InpaintBackendError(GlossRemoveError):
    """External inpainting backend failed"""

    def __init__(self, message: str, diagnostics: Optional[str] = None):
        self.diagnostics = diagnostics or ""
        detail = f"\n{self.diagnostics}" if self.diagnostics else ""
        super().__init__(f"{message}{detail}")


class ReferenceSelectionError(GlossRemoveError):
    """Not enough views to choose references from"""


class BackprojectionError(GlossRemoveError):
    """New primitives cannot be initialized"""


class StaleCacheError(GlossRemoveError):
    """Forward cache does not belong to the scene/camera being differentiated"""


class RefineDivergedError(GlossRemoveError):
    """Total loss exceeded the divergence bound"""

    def __init__(self, step: int, total: float, initial: float):
        self.step = step
        self.total = total
        self.initial = initial
        super().__init__(
            f"refinement diverged at step {step}: loss {total:.6g} > 10x initial {initial:.6g}"
        )


class EmptySelectionError(GlossRemoveError):
    """Nothing left to evaluate after masking"""


class ShapeMismatchError(GlossRemoveError):
    """Buffers that must share dimensions do not"""


class WindowTooLargeError(GlossRemoveError):
    """Image is smaller than the SSIM window"""
