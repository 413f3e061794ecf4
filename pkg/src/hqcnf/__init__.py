"""Hybrid quantum-classical normalizing flow on a numpy statevector simulator."""
from .flow import (CouplingLayer, FlowModel, ModelDivergence, SampleVector, build_model,
                   flow_forward, flow_inverse, layer_forward, layer_inverse, log_prob)
from .objective import (BaseDensitySpec, LossReport, base_log_density, nll_loss, sample,
                        train_epoch)
from .qsim import AnsatzSpec, GateOp, hardware_efficient_ansatz

__version__ = "0.1.0"
