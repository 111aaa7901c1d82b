"""Entry point of ``python -m spatial_attention_pyramid``."""
import sys

from .cli import main

sys.exit(main())
