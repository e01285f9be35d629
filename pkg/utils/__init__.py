from .logger import setup_logger, kv
from .checksum import fnv1a64
from .parallel import run_parallel

__all__ = ['setup_logger', 'kv', 'fnv1a64', 'run_parallel']
