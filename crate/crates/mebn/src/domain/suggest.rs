//! The platoon suggestor: summarizes a gated report cluster into one
//! platoon-level finding and nominates the unit (and parent company) the
//! cluster is reporting on.

use super::VehicleReport;
use crate::hypman::{Cluster, Nomination, SituationModel, SubjectRef, Suggestor};

/// Maps a report cluster to a nominated `Unit` with summary evidence
/// (`RepPltSubType`, `ReportedActivity`) and a nominated parent `Company`.
/// Subtype summarization: any trucks mark a headquarters platoon (armor HQ
/// if tanks are present, else mech HQ); otherwise the tank/APC majority
/// decides between armor and mech, ties going to mech.
#[derive(Debug, Clone, Default)]
pub struct PlatoonSuggestor;

impl PlatoonSuggestor {
    pub(crate) fn summarize(members: &[&VehicleReport]) -> (String, String) {
        let count = |t: &str| members.iter().filter(|r| r.vehicle_type == t).count();
        let (tanks, apcs, trucks) = (count("tank"), count("apc"), count("truck"));
        let subtype = if trucks > 0 {
            if tanks > 0 {
                "armorHQ"
            } else {
                "mechHQ"
            }
        } else if tanks > apcs {
            "armor"
        } else {
            "mech"
        };
        let moving = members.iter().filter(|r| r.activity == "moving").count();
        let activity = if moving * 2 >= members.len() { "moving" } else { "stationary" };
        (subtype.to_string(), activity.to_string())
    }
}

impl Suggestor<VehicleReport> for PlatoonSuggestor {
    fn name(&self) -> &str {
        "platoon"
    }

    fn suggest(
        &self,
        _situation: &SituationModel,
        cluster: &Cluster<'_, VehicleReport>,
        _seed: u64,
    ) -> Vec<Nomination> {
        if cluster.members.is_empty() {
            return Vec::new();
        }
        let (subtype, activity) = Self::summarize(&cluster.members);
        vec![Nomination {
            suggestor: self.name().to_string(),
            report_ids: cluster.members.iter().map(|r| r.report_id).collect(),
            centroid: cluster.centroid,
            report_entity: "Report".to_string(),
            evidence: vec![
                ("RepPltSubType".to_string(), subtype),
                ("ReportedActivity".to_string(), activity),
            ],
            subject: SubjectRef::New { entity_type: "Unit".to_string() },
            parent: Some(SubjectRef::New { entity_type: "Company".to_string() }),
        }]
    }
}
