from .image_io import read_pfm, write_pfm, read_png_mask, write_png_mask, read_png_rgb, write_png_rgb, read_image, read_mask
from .scene_repository import SceneRepository, load_scene, save_scene
from .network_store import load_network, save_network

__all__ = ['read_pfm', 'write_pfm', 'read_png_mask', 'write_png_mask', 'read_png_rgb', 'write_png_rgb',
           'read_image', 'read_mask', 'SceneRepository', 'load_scene', 'save_scene',
           'load_network', 'save_network']
