use crate::model::{Period, VmInstance, VmState, VmTypeSpec, SECONDS_PER_HOUR};

/// Advances the credit balance of a burstable instance by `elapsed` seconds
/// during which `burst_vcpus` vCPUs ran in burst mode.
///
/// With no burst activity the instance earns `credit_accrual` per hour.
/// Otherwise each burst vCPU spends one credit per `burst_period` seconds.
/// The balance never drops below zero; returns true when burst demand hit
/// an empty balance.
pub fn credit_tick(vm: &mut VmInstance, spec: &VmTypeSpec, elapsed: Period, burst_vcpus: u32) -> bool {
    if !vm.is_burstable() || vm.state == VmState::Terminated || elapsed == 0 {
        return false;
    }
    if burst_vcpus == 0 {
        let gain = spec.credit_accrual * elapsed as f64 / SECONDS_PER_HOUR;
        vm.cc += gain;
        vm.credits_accrued += gain;
        return false;
    }
    let demand = f64::from(burst_vcpus) * elapsed as f64 / spec.burst_period as f64;
    let spent = demand.min(vm.cc.max(0.0));
    vm.cc -= spent;
    vm.credits_consumed += spent;
    demand > spent
}

/// Credits reserved for a burst task of `work` full-speed seconds.
pub fn required_credits(work: Period, burst_period: Period) -> f64 {
    work.div_ceil(burst_period) as f64
}
