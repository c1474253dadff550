from .encoding import BinEncoderConfig, encode_bins, flipflop_percentages, triangle_percentages
from .evolve import EvoConfig, EvoResult, EvolvedModel, evolve, fitness, run_evo_mia
from .genome import Genome, GenomeError, from_text, to_text
from .ops import ParamRanges, crossover, merge, mutate, random_genome, tournament_select
from .risp import CompiledNet, risp_simulate

__all__ = [
    "BinEncoderConfig", "CompiledNet", "EvoConfig", "EvoResult", "EvolvedModel", "Genome",
    "GenomeError", "ParamRanges", "crossover", "encode_bins", "evolve", "fitness",
    "flipflop_percentages", "from_text", "merge", "mutate", "random_genome", "risp_simulate",
    "run_evo_mia", "to_text", "tournament_select", "triangle_percentages",
]
