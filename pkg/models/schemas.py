"""
Pydantic models for engine options, generator specs and run manifests
"""
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from config import Config

Vec3 = Tuple[float, float, float]


class RasterOpts(BaseModel):
    """Splatting constants, echoed into exported G-buffer metadata"""
    model_config = ConfigDict(frozen=True)

    alpha_min: float = Field(default=Config.ALPHA_MIN, gt=0.0, lt=1.0)
    t_stop: float = Field(default=Config.T_STOP, gt=0.0, lt=1.0)
    sigma_cutoff: float = Field(default=Config.SIGMA_CUTOFF, gt=0.0)
    tile_size: int = Field(default=Config.TILE_SIZE, ge=1)
    threads: int = Field(default=Config.THREADS, ge=1)


class TraceOpts(BaseModel):
    """Ray tracing constants"""
    model_config = ConfigDict(frozen=True)

    alpha_min: float = Field(default=Config.ALPHA_MIN, gt=0.0, lt=1.0)
    t_stop: float = Field(default=Config.T_STOP, gt=0.0, lt=1.0)
    t_eps: float = Field(default=Config.T_EPS, ge=0.0)
    sigma_cutoff: float = Field(default=Config.SIGMA_CUTOFF, gt=0.0)
    leaf_size: int = Field(default=Config.LEAF_SIZE, ge=1)
    use_sh: bool = Field(default=Config.TRACE_SH, description="Evaluate SH toward the ray, else band 0 only")
    threads: int = Field(default=Config.THREADS, ge=1)


class ShadingOpts(BaseModel):
    model_config = ConfigDict(frozen=True)

    m_thresh: float = Field(default=Config.M_THRESH, gt=0.0, lt=1.0)


class FilterOpts(BaseModel):
    """Screen-space glossy filter settings"""
    model_config = ConfigDict(frozen=True)

    levels: int = Field(default=Config.PYRAMID_LEVELS, ge=1)
    translate: str = Field(default="analytic", description="'analytic' or 'net:<dir>'")
    c0: float = Field(default=Config.TRANSLATE_C0)
    c1: float = Field(default=Config.TRANSLATE_C1, ge=0.0)

    @field_validator("translate")
    @classmethod
    def _check_translate(cls, value: str) -> str:
        if value != "analytic" and not value.startswith("net:"):
            raise ValueError("translate must be 'analytic' or 'net:<path>'")
        return value


class ObjectSpec(BaseModel):
    """Parametric object built as a cluster of Gaussians"""
    kind: Literal["sphere", "box"] = "sphere"
    center: Vec3 = (0.0, 0.0, 0.3)
    size: float = Field(default=0.25, gt=0.0, description="Sphere radius or box half-extent")
    color: Vec3 = (0.8, 0.2, 0.1)
    target: bool = False
    spacing: float = Field(default=0.05, gt=0.0)

    @field_validator("color")
    @classmethod
    def _check_color(cls, value: Vec3) -> Vec3:
        if any(c < 0.0 or c > 1.0 for c in value):
            raise ValueError("object color must lie in [0,1]^3")
        return value


class EnvSpec(BaseModel):
    """Procedural environment map"""
    kind: Literal["constant", "gradient", "checker"] = "gradient"
    edge: int = Field(default=Config.ENV_EDGE, ge=1)
    levels: int = Field(default=Config.ENV_LEVELS, ge=1)
    value: Vec3 = (0.8, 0.8, 0.8)
    ground: Vec3 = (0.1, 0.1, 0.12)
    checks: int = Field(default=4, ge=1)

    @field_validator("value", "ground")
    @classmethod
    def _nonnegative(cls, value: Vec3) -> Vec3:
        if any(c < 0.0 for c in value):
            raise ValueError("radiance must be nonnegative")
        return value


class SceneSpec(BaseModel):
    """Input of gen_synthetic_scene"""
    plane_extent: float = Field(default=1.0, gt=0.0, description="Half-size of the square plane")
    plane_roughness: float = Field(default=0.01, ge=0.01, le=0.25)
    plane_fresnel: float = Field(default=0.9, ge=0.0, le=1.0)
    plane_diffuse: float = Field(default=0.05, ge=0.0, le=1.0)
    plane_spacing: float = Field(default=0.04, gt=0.0)
    plane_jitter: float = Field(default=0.0, ge=0.0, le=0.5,
                                description="In-plane surfel offset as a fraction of spacing, drawn from seed")
    objects: List[ObjectSpec] = Field(default_factory=lambda: [ObjectSpec(target=True)], min_length=1)
    env: EnvSpec = Field(default_factory=EnvSpec)
    camera_count: int = Field(default=8, ge=1)
    camera_radius: float = Field(default=2.0, gt=0.0)
    camera_height: float = Field(default=1.6, gt=0.0)
    camera_target: Vec3 = (0.0, 0.0, 0.1)
    width: int = Field(default=64, ge=1)
    height: int = Field(default=64, ge=1)
    fov_deg: float = Field(default=50.0, gt=0.0, lt=180.0)
    near: float = Field(default=0.05, gt=0.0)
    far: float = Field(default=20.0, gt=0.0)
    sh_degree: int = Field(default=0, ge=0, le=3)
    with_references: bool = True
    seed: int = Config.SEED

    @field_validator("objects")
    @classmethod
    def _single_target(cls, value: List[ObjectSpec]) -> List[ObjectSpec]:
        if sum(1 for obj in value if obj.target) != 1:
            raise ValueError("exactly one object must be flagged as removal target")
        return value


class RemovalOptions(BaseModel):
    label_thresh: float = Field(default=Config.LABEL_THRESH, gt=0.0, lt=1.0)
    tau: float = Field(default=Config.TAU, ge=0.0)
    stride: int = Field(default=Config.STRIDE, ge=1)
    inpainter: str = Config.INPAINTER
    fallback_baseline: bool = Config.FALLBACK_BASELINE
    depth_gap: float = Field(default=Config.DEPTH_GAP, ge=0.0)
    alpha_min: float = Field(default=Config.MASK_ALPHA_MIN, ge=0.0)


class LossWeights(BaseModel):
    """Loss weights; stage-1 terms also supervise non-inpaint pixels in stage 2"""
    lambda_d: float = Field(default=1000.0, ge=0.0)
    lambda_dn: float = Field(default=0.05, ge=0.0)
    lambda_n: float = Field(default=0.5, ge=0.0)
    lambda_s: float = Field(default=0.05, ge=0.0)
    lambda_omega: float = Field(default=1.0, ge=0.0)
    lambda_region: float = Field(default=1.0, ge=0.0)
    lambda_a: float = Field(default=0.2, ge=0.0)
    lambda_m: float = Field(default=1.0, ge=0.0)


class RefineOptions(BaseModel):
    steps: int = Field(default=Config.STEPS, ge=0)
    lr_material: float = Field(default=Config.LR_MATERIAL, gt=0.0)
    lr_sh: float = Field(default=Config.LR_SH, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    divergence_factor: float = Field(default=Config.DIVERGENCE_FACTOR, gt=1.0)
    seed: int = Config.SEED
    log_every: int = Field(default=25, ge=1)


class RunManifest(BaseModel):
    """run.json written next to every CLI output"""
    subcommand: str
    flags: Dict[str, object] = Field(default_factory=dict)
    seed: Optional[int] = None
    versions: Dict[str, str] = Field(default_factory=dict)
    substitutions: Dict[str, str] = Field(default_factory=dict)
    outputs: List[str] = Field(default_factory=list)
    diagnostics: Dict[str, object] = Field(default_factory=dict)
