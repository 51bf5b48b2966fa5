"""Token-level prosody VAE with a separately trained utterance-level prior
network, plus the synthetic-corpus harness and objective metric suite used to
study the diversity/disentanglement trade-off of multi-scale latent TTS."""

__version__ = "0.1.0"
