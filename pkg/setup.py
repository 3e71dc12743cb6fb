from setuptools import setup, find_packages

setup(
    name="rsurl",
    version="0.1.0",
    description="RSURL - Roadside-unit coordinated multi-agent reinforcement learning for unsignalized intersections",
    packages=find_packages(exclude=["rsurl.tests"]),
    install_requires=["numpy",
                      "scipy",
                      "pandas",

                      "setuptools",
                      "msgpack",
                      "fire",
                      ],
    entry_points={"console_scripts": ["rsurl=rsurl.bench.cli:main"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
    ],
)
