"""Antenna selection for massive MIMO base stations with low-resolution ADCs."""
from .channel import (AntennaSubset, ChannelSet, LargeScaleParams, SelectionOutcome,
                      sample_channel, sample_positions, large_scale_gain)
from .quantization import QuantizerSpec, lloyd_max, quantizer_spec
from .downlink import dl_sum_rate, dl_ofdm_sum_rate, exhaustive_dl_select, nbs_select
from .uplink import (McmcConfig, fas_baseline, qfas, qfas_ofdm, qmcmc_as, qmcmc_ofdm,
                     ul_capacity, ul_ofdm_capacity)

__version__ = "0.1.0"
