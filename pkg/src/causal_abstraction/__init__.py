"""Identifiable causal abstractions from intervention-target families, with
linear Gaussian counterfactual simulation, relaxed maximum-likelihood fitting
and verification oracles."""

__version__ = "0.1.0"
