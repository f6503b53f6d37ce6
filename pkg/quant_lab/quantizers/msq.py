import numpy as np

from quant_lab.linops.calibration import as_array
from quant_lab.quantizers.quantizer import PreparedLayer, QuantizerInterface, QuantTrace


class MsqQuantizer(QuantizerInterface):
    """Memoryless scalar quantization: every weight rounded on its own."""

    name = "msq"

    def prepare(self, X, X_tilde=None):
        A = as_array(X)
        return PreparedLayer(np.arange(A.shape[1]), A, 0.0)

    def sweep(self, prepared, w, rounder):
        trace = QuantTrace.empty(len(w))
        for t, z in enumerate(w):
            trace.record(t, z, rounder.round(z), rounder.alphabet.saturates(z))
        return trace


def msq_layer(X, W, cfg):
    return MsqQuantizer(cfg).quantize_layer(X, W)


def msq_column(X, w, cfg):
    return MsqQuantizer(cfg).quantize_column(X, w)
