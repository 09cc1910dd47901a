"""Online sequence learning: parallel temporal neural coding network plus
exact online baselines (BPTT/TBPTT, RTRL, UORO, ESN) and an experiment
harness for next-step prediction, zero-shot adaptation, and continual
learning."""

__version__ = "0.1.0"
