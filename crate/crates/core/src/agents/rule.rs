//! Rule-based battery dispatch: charge on PV surplus or bottom-tariff hours,
//! discharge against top-tariff deficits, otherwise idle.

use crate::battery::{BatteryAction, BatteryParams, BatteryState};

/// The tariff's extreme price levels, read off the year's price column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TariffLevels {
    pub lowest: f64,
    pub highest: f64,
}

impl TariffLevels {
    pub fn from_prices(prices: &[f64]) -> Self {
        let lowest = prices.iter().cloned().fold(f64::INFINITY, f64::min);
        let highest = prices.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self { lowest, highest }
    }

    fn is_lowest(&self, price: f64) -> bool {
        (price - self.lowest).abs() < 1e-9
    }

    fn is_highest(&self, price: f64) -> bool {
        (price - self.highest).abs() < 1e-9
    }
}

pub fn rule_based_battery(
    state: &BatteryState,
    price: f64,
    tariff: &TariffLevels,
    params: &BatteryParams,
) -> BatteryAction {
    let room = state.soc < params.soc_max;
    if room && (state.p_pv > state.p_load || tariff.is_lowest(price)) {
        BatteryAction::Charge
    } else if tariff.is_highest(price) && state.soc > params.soc_min && state.p_load > state.p_pv {
        BatteryAction::Discharge
    } else {
        BatteryAction::Idle
    }
}
