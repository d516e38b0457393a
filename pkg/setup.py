from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; the numpy fallback is used at import
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "darkloop._lindblad_core",
                ["src/darkloop/_lindblad_core.pyx"],
                extra_compile_args=["-O3", "-fcx-limited-range"],
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
