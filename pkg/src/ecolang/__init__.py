"""ecolang: induce a compressed, rule-governed agent communication language
from corpus and dialogue data, then apply and evaluate it in LLM-driven
social simulations."""

__version__ = "0.1.0"
