use serde::{Deserialize, Serialize};

/// The three COCO keypoint states (`v = 0, 1, 2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Absent,
    Occluded,
    Visible,
}

impl Visibility {
    /// Both labeled states count as annotated.
    pub fn is_labeled(self) -> bool {
        !matches!(self, Visibility::Absent)
    }

    pub fn coco_flag(self) -> u8 {
        match self {
            Visibility::Absent => 0,
            Visibility::Occluded => 1,
            Visibility::Visible => 2,
        }
    }

    pub fn from_coco_flag(v: i64) -> Option<Self> {
        match v {
            0 => Some(Visibility::Absent),
            1 => Some(Visibility::Occluded),
            2 => Some(Visibility::Visible),
            _ => None,
        }
    }
}

/// Image-pixel keypoint. Coordinates of an absent keypoint carry no meaning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub state: Visibility,
}

impl Keypoint {
    pub const ABSENT: Keypoint = Keypoint {
        x: 0.0,
        y: 0.0,
        state: Visibility::Absent,
    };

    pub fn visible(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            state: Visibility::Visible,
        }
    }

    pub fn pos(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonAnnotation {
    pub keypoints: Vec<Keypoint>,
    /// Segmentation area in image px², when the source provides one.
    pub area: Option<f64>,
}

impl PersonAnnotation {
    pub fn new(keypoints: Vec<Keypoint>) -> Self {
        Self { keypoints, area: None }
    }

    pub fn absent(parts: usize) -> Self {
        Self::new(vec![Keypoint::ABSENT; parts])
    }

    /// Position of part `i` if it is annotated.
    pub fn labeled(&self, i: usize) -> Option<[f64; 2]> {
        self.keypoints
            .get(i)
            .filter(|k| k.state.is_labeled())
            .map(Keypoint::pos)
    }

    pub fn labeled_count(&self) -> usize {
        self.keypoints.iter().filter(|k| k.state.is_labeled()).count()
    }

    /// `[x0, y0, x1, y1]` over labeled keypoints.
    pub fn labeled_bbox(&self) -> Option<[f64; 4]> {
        let mut it = self.keypoints.iter().filter(|k| k.state.is_labeled());
        let first = it.next()?;
        let init = [first.x, first.y, first.x, first.y];
        Some(it.fold(init, |b, k| {
            [b[0].min(k.x), b[1].min(k.y), b[2].max(k.x), b[3].max(k.y)]
        }))
    }

    pub fn centroid(&self) -> Option<[f64; 2]> {
        let n = self.labeled_count();
        if n == 0 {
            return None;
        }
        let (sx, sy) = self
            .keypoints
            .iter()
            .filter(|k| k.state.is_labeled())
            .fold((0.0, 0.0), |(sx, sy), k| (sx + k.x, sy + k.y));
        Some([sx / n as f64, sy / n as f64])
    }
}
