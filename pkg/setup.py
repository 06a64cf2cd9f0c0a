from setuptools import find_packages, setup

package_name = 'waveop'

setup(
    name=package_name,
    version='0.1.0',
    packages=find_packages(exclude=['test', 'examples', 'examples.*']),
    data_files=[
        ('share/' + package_name + '/configs', ['configs/gaussian.cfg', 'configs/soliton_small.cfg',
                                                'configs/cross_oracle.cfg', 'configs/radial_table.cfg',
                                                'configs/smooth_well.dat']),
    ],
    python_requires='>=3.9',
    install_requires=['setuptools', 'numpy', 'scipy>=1.15', 'torch', 'pyyaml', 'matplotlib'],
    zip_safe=True,
    description='Structure formulas for the wave operator of -Laplace + V in three dimensions',
    license='Apache-2.0',
    tests_require=['pytest', 'flake8'],
    entry_points={
        'console_scripts': ['waveop = waveop.cli:main'],
    },
)
