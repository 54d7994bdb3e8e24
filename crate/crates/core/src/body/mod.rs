//! Toy articulated body: rotations, template, kinematics and projection.

mod kinematics;
pub mod rotation;
pub mod template;

pub use kinematics::{
    forward_kinematics, forward_kinematics_op, pose_from_rotmats, project_op, project_weak_perspective,
    regress_joints, regressor_matrix, BodyParams, PosedBody,
};
pub use rotation::{
    axis_angle_to_rotmat, axis_angle_to_rotmat_op, rot6d_to_rotmat, rot6d_to_rotmat_op, rotmat_to_axis_angle,
    rotmat_to_axis_angle_op, rotmat_to_rot6d, Mat3, IDENTITY,
};
pub use template::{BodyTemplate, DEFAULT_JOINTS, DEFAULT_PARENTS, DEFAULT_VERTICES, NUM_BETAS};
