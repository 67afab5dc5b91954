"""bflylab: butterfly/FFT token-mixing laboratory.

Functional reference of butterfly factor matrices and radix-2 FFT on a
shared four-multiplier datapath, forward math and operation counters for
FBfly/ABfly networks, a bank-conflict-free butterfly memory layout with
exhaustive checkers, a cycle-level accelerator performance and resource
model, and a joint algorithm/hardware design-space explorer.
"""

__version__ = "0.1.0"

from .accel import (
    AttentionTiming,
    BandwidthSweep,
    HardwareConfig,
    LatencyReport,
    ResourceReport,
    bandwidth_sweep,
    resource_model,
    sim_attention,
    sim_baseline_mac,
    sim_butterfly_layer,
    sim_fft_layer,
    sim_network,
)
from .butterfly import (
    BuMode,
    ButterflyMatrix,
    ButterflyStage,
    ComplexVec,
    OpCounter,
    apply_butterfly,
    bu_step,
    dft_naive,
    expand_dense,
    fft,
    fft_array,
    fft_as_butterfly,
    identity_butterfly,
    quantize_fp16,
    random_butterfly,
)
from .codesign import (
    AccuracyTable,
    DesignPoint,
    DeviceBudget,
    SearchSpace,
    enumerate_space,
    evaluate_point,
    pareto_front,
    run_dse,
    select_design,
)
from .fabnet import (
    BlockWeights,
    CountReport,
    FabNetConfig,
    abfly_forward,
    count_flops_params,
    fabnet_forward,
    fbfly_forward,
    layernorm_row,
    softmax_row,
)
from .memlayout import (
    BankLayout,
    build_layout,
    check_conflict_free,
    coalesce_indices,
    recover_order,
    start_positions,
)
