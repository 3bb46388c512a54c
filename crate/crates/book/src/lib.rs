// The guide's listings are compiled as doc-tests by including each chapter
// as the docs of an empty module, one module per chapter so a failure points
// at its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/point-clouds.md")]
pub mod point_clouds {}
#[doc = include_str!("../../../book/src/background-model.md")]
pub mod background_model {}
#[doc = include_str!("../../../book/src/filtering.md")]
pub mod filtering {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/synthetic-scenes.md")]
pub mod synthetic_scenes {}
#[doc = include_str!("../../../book/src/benchmarking.md")]
pub mod benchmarking {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
