"""Requirements-engineering workbench.

Lints requirement statements against seven quality criteria (Essential,
Independent, Unambiguous, Complete, Singular, Feasible, Verifiable),
classifies them functional vs. non-functional, assesses them with a
pluggable multi-LLM ensemble, measures rater agreement with kappa
statistics, hosts blind annotation sessions, and drafts preliminary
test specifications.
"""

__version__ = "0.1.0"
