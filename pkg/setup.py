from setuptools import setup

setup(
    name = 'qmonitor',
    version = '0.1',
    description = 'Continuous weak measurement of open quantum systems',
    py_modules = ['qmonitor', 'framework', 'operators', 'lindblad', 'monitoring',
                  'trajectory', 'ensemble', 'models', 'expconfig'],
    install_requires = ['numpy', 'scipy', 'PyYAML'],
    extras_require = {'test': ['pytest']},
    entry_points = {'console_scripts': ['qmonitor=qmonitor:main']},
)
