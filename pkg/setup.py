from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    # numpy fallback kernels are used when the extension is absent
    ext_modules = []
else:
    ext_modules = cythonize(
        ["src/qndsim/_kernels.pyx"],
        compiler_directives={"language_level": 3},
    )
    for ext in ext_modules:
        ext.include_dirs.append(np.get_include())
        ext.extra_compile_args.append("-O3")

setup(ext_modules=ext_modules)
