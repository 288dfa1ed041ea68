pub mod ideal;
pub mod saturation;
