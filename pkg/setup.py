from setuptools import Extension, setup

setup(
    ext_modules=[
        Extension(
            "simshm._crc32c",
            sources=["src/simshm/_crc32c.c"],
            extra_compile_args=["-O3"],
        )
    ]
)
