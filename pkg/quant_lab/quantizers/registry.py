from quant_lab.quantizers.msq import MsqQuantizer
from quant_lab.quantizers.optq import OptqQuantizer
from quant_lab.quantizers.qronos import QronosQuantizer
from quant_lab.quantizers.quantizer import QuantConfig, QuantizerInterface
from quant_lab.utils.logger import logger

# Available quantizers
quantizers = {
    "optq": OptqQuantizer,
    "qronos": QronosQuantizer,
    "msq": MsqQuantizer,
}


def create_quantizer(name: str, cfg: QuantConfig) -> QuantizerInterface:
    quantizer_class = quantizers.get(name)
    if quantizer_class is None:
        raise ValueError(f"Unknown quantizer '{name}', expected one of {sorted(quantizers)}")
    logger.debug(f"Creating {name} quantizer with {cfg.describe()}")
    return quantizer_class(cfg)
