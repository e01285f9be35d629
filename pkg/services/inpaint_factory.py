from typing import Optional

from config import Config

from .inpainting import BaselineInpainter, CommandInpainter, FallbackInpainter, Inpainter


class InpainterFactory:
    """Factory for creating inpainting backends from a CLI/config spec"""

    @staticmethod
    def create(spec: Optional[str] = None, fallback_baseline: Optional[bool] = None,
               workdir: Optional[str] = None) -> Inpainter:
        """
        Create a backend for 'baseline' or 'cmd:<exe>'

        Args:
            spec: backend spec, defaults to Config.INPAINTER
            fallback_baseline: wrap external backends so failures fall back to the baseline
            workdir: directory for external task files
        """
        spec = spec or Config.INPAINTER
        if fallback_baseline is None:
            fallback_baseline = Config.FALLBACK_BASELINE

        if spec == "baseline":
            return BaselineInpainter()
        if spec.startswith("cmd:"):
            backend = InpainterFactory._create_command(spec[4:], workdir)
            return FallbackInpainter(backend) if fallback_baseline else backend
        raise ValueError(f"unknown inpainter {spec!r}; expected 'baseline' or 'cmd:<exe>'")

    @staticmethod
    def _create_command(command: str, workdir: Optional[str]) -> Inpainter:
        if not command.strip():
            raise ValueError("cmd: inpainter needs an executable")
        return CommandInpainter(command, workdir=workdir)
