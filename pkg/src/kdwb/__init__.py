"""Knowledge-distillation workbench: small CNN/DNN teachers, distillation with
labeled, mismatched or mixed stimulus, and stimulus complexity statistics."""

__version__ = "0.1.0"
