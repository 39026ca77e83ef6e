"""Spike-driven vision-language engine (internal name: ``svl``).

Integer-LIF spiking encoders for point clouds and event streams, trained
against frozen text/image embeddings and deployed through a folded zero-shot
head. Everything runs on numpy at desk scale.
"""
