from os import path
import re
import sys

from setuptools import setup, find_packages

# perpex/__init__.py imports numpy, which may not be installed yet
with open(path.join(path.dirname(__file__), 'perpex', '__init__.py')) as f:
    version_info = re.search(r'version_info = \((.*)\)', f.read()).group(1)
__version__ = '.'.join(v.strip() for v in version_info.split(','))

if sys.version_info < (3, 7):
    raise Exception('perpex requires Python 3.7 or higher')

classifiers = [
    "License :: OSI Approved :: GNU Lesser General Public License v3 or later (LGPLv3+)",
    "Operating System :: MacOS :: MacOS X",
    "Operating System :: POSIX",
    "Programming Language :: Python",
    "Programming Language :: Python :: Implementation :: CPython",
    "Programming Language :: Python :: 3 :: Only",
    "Programming Language :: Python :: 3.7",
    "Programming Language :: Python :: 3.8",
    "Programming Language :: Python :: 3.9",
    "Topic :: Office/Business :: Financial :: Investment",
    "Topic :: Scientific/Engineering :: Mathematics",
    "Intended Audience :: Science/Research",
    "Development Status :: 3 - Alpha",
]

setup(
    name='perpex',
    version=__version__,
    description='Optimal infinite-horizon liquidation under linear temporary impact',
    author='perpex contributors',
    install_requires=['numpy>=1.18', 'scipy>=1.6', 'numba>=0.50'],
    zip_safe=False,
    long_description=open(path.join(path.dirname(__file__), 'README.rst')).read(),
    tests_require=['pytest>=3.0'],
    classifiers=classifiers,
    packages=find_packages(exclude=['tests', 'tests.*']),
    package_data={'perpex': ['fixtures/*.json']},
    entry_points={'console_scripts': ['perpex = perpex.cli:main',
                                      'perpex-regression = perpex.regression:main']},
)
