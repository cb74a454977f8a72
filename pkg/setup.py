import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "mlvae.nd.kernels._fastcore",
        ["src/mlvae/nd/kernels/_fastcore.pyx"],
        include_dirs=[numpy.get_include()],
        # strict FP, no contraction: the vectorizer versions each loop with a
        # runtime pointer-overlap check, and when small parameter/gradient
        # buffers land adjacent on the heap the scalar fallback runs. Under
        # fast-math the two versions round differently, which made training
        # results depend on malloc layout. IEEE-exact codegen keeps every
        # version bit-identical, so runs are reproducible.
        extra_compile_args=["-O3", "-ffp-contract=off", "-march=native"],
        libraries=["m"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
