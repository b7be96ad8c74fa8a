from setuptools import setup, find_packages

setup(
    name="frame_registration",
    version="0.1.0",
    package_dir={"": "src"},
    packages=find_packages(where="src"),
    include_package_data=True,
    install_requires=[
        "numpy>=1.24.0",
        "scipy>=1.12.0",
        "pillow>=9.0.0",
        "matplotlib>=3.6.0",
        "pydantic>=2.0.0",
        "pytest>=6.2.5",
    ],
    entry_points={
        "console_scripts": [
            "frame-reg=frame_registration.__main__:main",
        ],
    },
    author="Yizhen Jia",
    author_email="yizhen.jia96@gmail.com",
    description="Multiscale elastic and parametric registration of endoscopy frame sequences",
    keywords="image registration, elastic, gauss-newton, multiscale, capsule endoscopy",
    python_requires=">=3.10",
)
