//! MST, PMFG and TMFG backbones.
