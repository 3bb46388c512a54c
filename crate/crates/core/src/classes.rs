//! Object category ids, in the label order of the RCooper dataset.

pub const CAR: i32 = 0;
pub const PEDESTRIAN: i32 = 1;
pub const TRUCK: i32 = 2;
pub const BUS: i32 = 3;
pub const BICYCLE: i32 = 4;
pub const MOTORCYCLE: i32 = 5;
pub const TRICYCLE: i32 = 6;
pub const CONSTRUCTION: i32 = 7;
pub const HUGE_VEHICLE: i32 = 8;
/// Traffic signals are static infrastructure and evaluated as background.
pub const SIGNAL: i32 = 9;

pub fn name(class_id: i32) -> Option<&'static str> {
    Some(match class_id {
        CAR => "car",
        PEDESTRIAN => "pedestrian",
        TRUCK => "truck",
        BUS => "bus",
        BICYCLE => "bicycle",
        MOTORCYCLE => "motorcycle",
        TRICYCLE => "tricycle",
        CONSTRUCTION => "construction",
        HUGE_VEHICLE => "huge_vehicle",
        SIGNAL => "signal",
        _ => return None,
    })
}
