from setuptools import setup, find_packages

setup(
    name='coronaLab',
    version='0.1.0-dev',
    packages=find_packages(exclude=['tests']),
    description='coronaLab is a numerical laboratory for harmonic measure in planar and spatial domains. It estimates harmonic measure and Green functions by walk-on-spheres, builds dyadic lattices on discrete boundary measures, computes truncated and maximal Riesz transforms and runs the stopping-time and corona constructions that relate them, reporting every constant it achieves.',
    python_requires='>=3.9',
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.9",
        "tenacity==8.2.3",
    ],
    extras_require={
        'test': ["pytest>=7.0"],
    },
    entry_points={
        'console_scripts': [
            'coronaLab = coronaLab.main:main',
        ],
    },
)
