//! Dataset ingestion and result export.

mod csv;
mod idx;

pub use csv::{export_grid_csv, export_grid_csv_with_meta, write_grid_csv};
pub use idx::{
    encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels, save_idx, IMAGE_MAGIC,
    LABEL_MAGIC,
};
