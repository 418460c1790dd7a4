from setuptools import find_packages, setup

setup(
    name='tcpgen-bias',
    version='0.1.0',
    description='Tree-constrained pointer-generator contextual biasing with phoneme-aware encodings',
    packages=find_packages(exclude=['tests']),
    install_requires=['numpy>=1.21', 'scipy>=1.7'],
    extras_require={'test': ['pytest>=7', 'hypothesis>=6']},
    entry_points={'console_scripts': ['tcpgen-bias = biasing.cli:main']},
)
