from setuptools import find_packages,setup
from typing import List

HYPEN_E_DOT='-e .'
def get_requirements(file_path:str)->List[str]:
    '''
    this function will return the list of requirements
    '''
    requirements=[]
    with open(file_path) as f:
        requirements=[req.strip() for req in f.readlines()]
        requirements=[req for req in requirements if req and not req.startswith('#')]

        if HYPEN_E_DOT in requirements:
            requirements.remove(HYPEN_E_DOT)
    return requirements

setup(
    name='radius_of_information',
    version='0.1.0',
    author='uvais',
    author_email='mduvais667@gmail.com',
    packages=find_packages(exclude=['tests']),
    install_requires=get_requirements('requirements.txt'),
    entry_points={
        'console_scripts': ['rinfo=app.main:main'],
    },
)
