from jax import config

# float64 throughout
config.update("jax_enable_x64", True)

__version__ = "0.1"
