"""Deep radiance caching renderer: exact direct light, cached CNN-upgraded
hemispherical radiance maps for everything indirect."""

__version__ = "0.1.0"
