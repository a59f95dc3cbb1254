"""
Domain models for the modular redesign toolkit.

These models represent FRFs, interconnections, specifications and the
records produced by synthesis.
"""

from .models import (
    FrequencyGrid, FrfMatrix, SecondOrderModel, InterconnectionStructure, SynthesisOptions
)
from .specs import (
    WeightSide, DiagonalWeight, SystemSpec, ModuleSpec, ErrorFrf, SpecVerdict,
    DScaling, StackedWeights, CostWeights, TerminationReason, FrequencyTrace, SynthesisTrace
)

__all__ = [
    'FrequencyGrid',
    'FrfMatrix',
    'SecondOrderModel',
    'InterconnectionStructure',
    'SynthesisOptions',
    'WeightSide',
    'DiagonalWeight',
    'SystemSpec',
    'ModuleSpec',
    'ErrorFrf',
    'SpecVerdict',
    'DScaling',
    'StackedWeights',
    'CostWeights',
    'TerminationReason',
    'FrequencyTrace',
    'SynthesisTrace',
]
