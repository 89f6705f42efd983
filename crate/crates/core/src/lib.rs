pub mod amm;
pub mod curves;
pub mod fixed;
pub mod ledger;
pub mod output;
pub mod rarity;
pub mod rewards;
pub mod rng;
pub mod sim;
