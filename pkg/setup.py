from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext = Extension(
        "superkmeans._kernels",
        sources=["src/superkmeans/_kernels.pyx"],
        # -ffp-contract=off pins IEEE mul-then-add so the compiled scan is
        # bit-identical to the NumPy reference kernels.
        extra_compile_args=["-O3", "-fopenmp", "-ffp-contract=off"],
        extra_link_args=["-fopenmp"],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
