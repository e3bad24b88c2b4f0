"""Inelastic constitutive artificial neural networks with a generalized dual potential."""

import jax

# the recurrent kernel and the finite-difference checks need double precision
jax.config.update("jax_enable_x64", True)

__version__ = "0.1.0"
