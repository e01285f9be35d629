from .scene import GaussianPrimitive, GaussianCloud, Camera, ViewReference, Scene, validate_scene
from .environment import EnvironmentMap
from .buffers import GBuffer, ScreenFootprint, TraceResult, SpecularBuffers, ShadeBuffers, ScreenPyramid, LightingMask, InpaintTask
from .schemas import RasterOpts, TraceOpts, ShadingOpts, FilterOpts, SceneSpec, ObjectSpec, EnvSpec, RemovalOptions, LossWeights, RefineOptions, RunManifest
from .network import ConvLayer, ConvNetSpec

__all__ = ['GaussianPrimitive', 'GaussianCloud', 'Camera', 'ViewReference', 'Scene', 'validate_scene',
           'EnvironmentMap', 'GBuffer', 'ScreenFootprint', 'TraceResult', 'SpecularBuffers', 'ShadeBuffers',
           'ScreenPyramid', 'LightingMask', 'InpaintTask', 'RasterOpts', 'TraceOpts', 'ShadingOpts',
           'FilterOpts', 'SceneSpec', 'ObjectSpec', 'EnvSpec', 'RemovalOptions', 'LossWeights',
           'RefineOptions', 'RunManifest', 'ConvLayer', 'ConvNetSpec']
