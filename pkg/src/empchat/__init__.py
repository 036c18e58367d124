"""Desk-scale empathetic dialog transformer.

Submodules: tensor (autodiff substrate), bpe (tokenizer), corpus (data
pipeline), model (multi-head transformer), trainer (optimization loop),
decoder (nucleus sampling), evaluator (metrics), cli (entry point), and
service (HTTP chat backend, imported lazily because it pulls in FastAPI).
"""

__version__ = "0.1.0"
