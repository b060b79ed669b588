"""Builds the advmim._core pybind11 extension from the C++ sources."""

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

ext = Pybind11Extension(
    "advmim._core",
    sources=[
        "python/bindings.cpp",
        "src/bound.cpp",
        "src/datagen.cpp",
        "src/io.cpp",
        "src/metrics.cpp",
        "src/training.cpp",
    ],
    include_dirs=["include", "vendor", "/usr/include/eigen3"],
    libraries=["png", "z"],
    cxx_std=20,
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
