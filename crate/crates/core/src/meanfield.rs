//! placeholder
pub struct FlowPair;
