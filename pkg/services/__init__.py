from .renderer import Renderer, RenderResult, render
from .rasterizer import rasterize_gbuffer, brute_force_gbuffer, composite_samples
from .tracer import Bvh, build_bvh, trace, trace_batch, trace_debug
from .environment_sampler import sample_env
from .shading import shade_ideal_specular, compose_color
from .screen_filter import RoughnessTranslator, build_pyramid, filter_specular, translate_roughness
from .lighting_mask import lighting_mask, object_reflection_map
from .removal import coarse_remove, gen_inpaint_masks, select_reference_views, backproject_init
from .inpainting import Inpainter, BaselineInpainter, CommandInpainter, FallbackInpainter, inpaint_2d
from .inpaint_factory import InpainterFactory
from .gradients import render_grad_materials, check_material_gradients
from .refiner import TrainingView, refine
from .metrics import psnr, ssim
from .scene_generator import gen_synthetic_scene, preset

__all__ = ['Renderer', 'RenderResult', 'render', 'rasterize_gbuffer', 'brute_force_gbuffer',
           'composite_samples', 'Bvh', 'build_bvh', 'trace', 'trace_batch', 'trace_debug', 'sample_env',
           'shade_ideal_specular', 'compose_color', 'RoughnessTranslator', 'build_pyramid', 'filter_specular',
           'translate_roughness', 'lighting_mask', 'object_reflection_map', 'coarse_remove',
           'gen_inpaint_masks', 'select_reference_views', 'backproject_init', 'Inpainter',
           'BaselineInpainter', 'CommandInpainter', 'FallbackInpainter', 'inpaint_2d', 'InpainterFactory',
           'render_grad_materials', 'check_material_gradients', 'TrainingView', 'refine', 'psnr', 'ssim',
           'gen_synthetic_scene', 'preset']
