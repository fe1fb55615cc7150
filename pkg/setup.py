#!/usr/bin/env python
from setuptools import setup

# The library modules are flat (src/ssb, src/bench, src/bin) and are put on
# the path by egs/*/sync1/path.sh and by the pytest `pythonpath` setting.
setup(
    name='ssbsync',
    version='1.0',
    description='Dual-rate SSB timing search for 5G NR',
    python_requires='>=3.7',
    py_modules=[],
    packages=[],
    install_requires=[
        'numpy>=1.20.0',
        'scipy>=1.5.0',
        'setuptools>=38.5.1',
        'joblib>=0.12.0',
    ],
)
