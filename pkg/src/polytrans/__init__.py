"""Multilingual program translation on a numpy autodiff core.

Modules: ``ndtensor`` (reverse-mode autodiff), ``infolab`` (exact discrete
information theory), ``gaussian``, ``toylang``, ``corpus``, ``model``,
``train``, ``evaluate``, ``checks`` and ``cli``.
"""
__version__ = "0.1.0"
