"""Model files and benchmark generators."""
from .generators import MAX_LOOPY, SUM_LOOPY, gen_grid, gen_hmm, gen_latent_tree
from .uai import (UaiDocument, apply_evidence, parse_evidence, parse_query, parse_uai, parse_uai_document,
                  write_evidence, write_query, write_uai)
