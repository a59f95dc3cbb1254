"""
Service layer for the computational work.

Services assemble systems, build and check specs, solve the synthesis
problem and run the verification oracles on top of the domain models.
"""

from .synthesis_service import SynthesisService, SynthesisResult, synthesize
from .frf_assembly import AssembledSystem

__all__ = [
    'AssembledSystem',
    'SynthesisService',
    'SynthesisResult',
    'synthesize',
]
