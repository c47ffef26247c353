from facetrans_lib.faces_synth import (
    DatasetSplit,
    ExpressionLabel,
    Landmarks,
    Sample,
    expression_catalogue,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from facetrans_lib.losses import LossBreakdown, LossWeights
from facetrans_lib.mask import landmarks_to_mask
from facetrans_lib.nets import ArchConfig, Generator, PatchDiscriminator, init_params
from facetrans_lib.training import TrainConfig, TranslationModel, load_translation_model, train, train_step, translate

__license__ = """
Copyright (c) The facetrans-lib Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""


__all__ = [
    'ArchConfig',
    'DatasetSplit',
    'ExpressionLabel',
    'Generator',
    'Landmarks',
    'LossBreakdown',
    'LossWeights',
    'PatchDiscriminator',
    'Sample',
    'TrainConfig',
    'TranslationModel',
    'expression_catalogue',
    'generate_dataset',
    'init_params',
    'landmarks_to_mask',
    'load_dataset',
    'load_translation_model',
    'save_dataset',
    'train',
    'train_step',
    'translate',
]
