from setuptools import setup

setup(
    name='smtalign',
    version='0.1.0',
    packages=['smtalign'],
    package_data={'smtalign': ['defaults.yaml']},
    install_requires=[
        'numpy>=1.24.0',
        'pandas>=2.0.0',
        'pyyaml>=6.0.0',
        'appdirs>=1.4.4',
        'click>=8.1.0',
    ],
    entry_points={
        'console_scripts': ['smtalign=smtalign.cli:main'],
    },
)
