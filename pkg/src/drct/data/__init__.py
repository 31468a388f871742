"""Super-resolution data: bicubic degradation, manifests and patch sampling."""
