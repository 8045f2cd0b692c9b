"""beamforge: THz ultra-massive MIMO beam-training workbench.

Modules:
    channel    far-field LoS channel model and received-power evaluation
    codebook   hierarchical deactivation codebooks and the DFT codebook
    beamsearch beam-training protocols with exact measurement accounting
    datagen    dataset generation and bit-exact serialization
    nnrt       serialized-network loading and the prediction forward pass
    evalbench  power-vs-distance, gain-loss CDF, and complexity benchmarks
    cli        the ``beamforge`` command line
"""

__version__ = "0.1.0"
