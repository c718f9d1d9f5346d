"""Ideation workbench over an annotated Chinese-painting corpus.

Subsystems: corpus store and annotation schema (`corpus`), painting-type
classification head (`classifier`), vision-language annotation pipeline
(`annotator`), concept normalization and clustering (`design_space`),
inverted-index search (`search`), the tag-to-image-to-poem generation
chain (`ideation`), rating statistics (`stats`), and the HTTP service
plus CLI (`service`, `cli`).
"""

__version__ = "0.1.0"
