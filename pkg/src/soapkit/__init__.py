"""Toolkit for clinical-conversation transcripts: character-level
alignment of reference and ASR text, projection of section/speaker labels
onto ASR utterances, classifier baselines and a small neural encoder, and
agreement statistics for SOAP notes."""

__version__ = "0.1.0"
