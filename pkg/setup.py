from setuptools import setup, find_packages

setup(
    name='bubble-correction',
    version='0.1.0',
    packages=find_packages(),
    install_requires=[
        'numpy',                 # Float evaluation of fields and quadrature grids
        'scipy',                 # Special functions, Gauss-Jacobi rules, quad oracle
        'pydantic',              # Validated configurations and reports
        'pydantic-settings',     # Environment-driven settings
    ],
    extras_require={
        'dev': ['pytest', 'pytest-cov', 'sympy'],  # sympy is the symbolic test oracle
    },
    entry_points={
        'console_scripts': [
            'bubble-correction=bubble_correction.cli:main',
        ],
    },
)
