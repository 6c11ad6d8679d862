#!/usr/bin/env python
import setuptools

with open("requirements.txt") as f:
    requirements = list(map(lambda x: x.strip(), f.read().strip().splitlines()))

setuptools.setup(
    name="unmix_jax",
    version="0.1",
    description="Fully constrained spectral unmixing in JAX by subspace transform and alternating projection",
    install_requires=requirements,
    packages=setuptools.find_packages(),
    entry_points={"console_scripts": ["unmix-jax=unmix_jax.cli:main"]},
)
