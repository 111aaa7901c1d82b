"""Current version of package spatial_attention_pyramid."""
__version__ = "1.0.0"
