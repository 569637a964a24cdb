//! Stacks: groups of instances created atomically from a template.
//!
//! A template names a set of resources (instances) and, optionally, a chain
//! over them. Creation is all-or-nothing: if any resource is rejected or the
//! chain cannot be installed, everything already created is rolled back and
//! the platform is left byte-identical to its state before the call.

use serde::{Deserialize, Serialize};

use crate::chain::PathMetric;
use crate::error::{Error, Result};
use crate::ids::{ChainId, InstanceId, PopName, StackId};
use crate::instance::ResourceRequest;
use crate::model::RejectReason;
use crate::platform::{PlatformState, DEFAULT_IMAGE};

/// One instance requested by a template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackResource {
    /// Name of the resource within the template, unique per template.
    pub name: String,
    #[serde(default = "default_image")]
    pub image: String,
    pub cpu_cus: u64,
    #[serde(default)]
    pub memory_mb: u64,
    #[serde(default)]
    pub storage_gb: u64,
    #[serde(default = "default_demand")]
    pub demand: f64,
}

fn default_image() -> String {
    DEFAULT_IMAGE.to_owned()
}

fn default_demand() -> f64 {
    1.0
}

impl StackResource {
    pub fn request(&self) -> ResourceRequest {
        ResourceRequest {
            cpu_cus: self.cpu_cus,
            memory_mb: self.memory_mb,
            storage_gb: self.storage_gb,
        }
    }
}

/// Optional chain over a template's resources, by resource name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub hops: Vec<String>,
    #[serde(default)]
    pub metric: PathMetric,
}

/// Declarative description of a stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackTemplate {
    pub name: String,
    pub resources: Vec<StackResource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSpec>,
}

impl StackTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.resources.is_empty() {
            return Err(Error::InvalidRequest(format!(
                "stack template `{}` declares no resources",
                self.name
            )));
        }
        let mut names = std::collections::BTreeSet::new();
        for resource in &self.resources {
            if !names.insert(resource.name.as_str()) {
                return Err(Error::InvalidRequest(format!(
                    "stack template `{}` declares resource `{}` twice",
                    self.name, resource.name
                )));
            }
            resource.request().validate()?;
            if !(0.0..=1.0).contains(&resource.demand) {
                return Err(Error::InvalidRequest(format!(
                    "resource `{}`: demand must lie in [0, 1], got {}",
                    resource.name, resource.demand
                )));
            }
        }
        if let Some(chain) = &self.chain {
            for hop in &chain.hops {
                if !names.contains(hop.as_str()) {
                    return Err(Error::InvalidRequest(format!(
                        "chain references undeclared resource `{hop}`"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A created stack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackRecord {
    pub id: StackId,
    pub name: String,
    /// PoP the stack was created on; all its instances live there.
    pub pop: PopName,
    /// Resource name → instance, in template order.
    pub instances: Vec<(String, InstanceId)>,
    pub chain: Option<ChainId>,
    pub created_at: f64,
}

/// What `create_stack` produced: a record, or a typed rejection naming the
/// resource that did not fit.
#[derive(Debug, Clone)]
pub enum StackOutcome {
    Created(StackRecord),
    Rejected {
        reason: RejectReason,
        resource: String,
    },
}

impl StackOutcome {
    pub fn created(&self) -> Option<&StackRecord> {
        match self {
            StackOutcome::Created(record) => Some(record),
            StackOutcome::Rejected { .. } => None,
        }
    }

    pub fn rejection(&self) -> Option<(RejectReason, &str)> {
        match self {
            StackOutcome::Created(_) => None,
            StackOutcome::Rejected { reason, resource } => Some((*reason, resource)),
        }
    }
}

impl PlatformState {
    /// Instantiates a template on `pop`, atomically.
    ///
    /// Resources are allocated in template order. The first rejection rolls
    /// back everything allocated so far and reports which resource failed;
    /// a chain that cannot be installed likewise rolls the whole stack back.
    pub fn create_stack(&mut self, pop: &PopName, template: &StackTemplate) -> Result<StackOutcome> {
        template.validate()?;

        let mut created: Vec<(String, InstanceId)> = Vec::new();
        for resource in &template.resources {
            let result = self.allocate(
                pop,
                resource.request(),
                resource.image.clone(),
                resource.demand,
            )?;
            match result {
                crate::model::AllocationResult::Accepted { instance, .. } => {
                    created.push((resource.name.clone(), instance.id));
                }
                crate::model::AllocationResult::Rejected { reason } => {
                    self.roll_back(&created);
                    return Ok(StackOutcome::Rejected {
                        reason,
                        resource: resource.name.clone(),
                    });
                }
            }
        }

        let chain_id = if let Some(spec) = &template.chain {
            let hops: Vec<InstanceId> = spec
                .hops
                .iter()
                .map(|name| {
                    created
                        .iter()
                        .find(|(n, _)| n == name)
                        .expect("validated against the template")
                        .1
                        .clone()
                })
                .collect();
            match self.set_chain(&hops, spec.metric) {
                Ok(chain) => Some(chain.id),
                Err(err) => {
                    self.roll_back(&created);
                    return Err(err);
                }
            }
        } else {
            None
        };

        let record = StackRecord {
            id: self.mint_stack_id(),
            name: template.name.clone(),
            pop: pop.clone(),
            instances: created,
            chain: chain_id,
            created_at: self.clock(),
        };
        self.stacks.insert(record.id.clone(), record.clone());
        Ok(StackOutcome::Created(record))
    }

    fn roll_back(&mut self, created: &[(String, InstanceId)]) {
        for (_, id) in created.iter().rev() {
            self.release(id).expect("rollback releases live instances");
        }
    }

    /// Deletes a stack created on `pop`: its chain first, then every
    /// instance. A stack is only visible to — and deletable through — the PoP
    /// it was created on.
    pub fn delete_stack(&mut self, pop: &PopName, id: &StackId) -> Result<Vec<InstanceId>> {
        let record = match self.stacks.get(id) {
            Some(record) if &record.pop == pop => record.clone(),
            // Wrong PoP looks identical to a missing stack on purpose:
            // endpoints must not leak each other's resources.
            _ => return Err(Error::UnknownStack(id.clone())),
        };

        if let Some(chain_id) = &record.chain {
            // The chain may already be gone if a member was released directly.
            if self.chain(chain_id).is_some() {
                self.remove_chain(chain_id)?;
            }
        }
        let mut released = Vec::new();
        for (_, instance_id) in &record.instances {
            self.release(instance_id)?;
            released.push(instance_id.clone());
        }
        self.stacks.remove(id);
        Ok(released)
    }

    /// Stacks created on `pop`, in id order.
    pub fn stacks_in<'a>(&'a self, pop: &'a PopName) -> impl Iterator<Item = &'a StackRecord> {
        self.stacks.values().filter(move |s| &s.pop == pop)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelRegistry, MODEL_FIXED_LIMIT};
    use crate::topology::{parse_topology, Topology};

    fn platform() -> PlatformState {
        let doc = parse_topology(&format!(
            "format_version = 1\n\n\
             [[pops]]\nname = \"pop1\"\ncpu_cus = 4\nmodel = {{ kind = \"{MODEL_FIXED_LIMIT}\" }}\n\n\
             [[pops]]\nname = \"pop2\"\ncpu_cus = 4\nmodel = {{ kind = \"{MODEL_FIXED_LIMIT}\" }}\n\n\
             [[links]]\na = \"pop1\"\nb = \"pop2\"\n"
        ))
        .unwrap();
        PlatformState::new(
            Topology::build(&doc).unwrap(),
            0.5,
            &ModelRegistry::builtin(),
        )
        .unwrap()
    }

    fn resource(name: &str, cpu_cus: u64) -> StackResource {
        StackResource {
            name: name.into(),
            image: DEFAULT_IMAGE.into(),
            cpu_cus,
            memory_mb: 0,
            storage_gb: 0,
            demand: 1.0,
        }
    }

    fn pop(name: &str) -> PopName {
        PopName::new(name)
    }

    #[test]
    fn creates_all_resources_in_order() {
        let mut state = platform();
        let template = StackTemplate {
            name: "web".into(),
            resources: vec![resource("fw", 1), resource("app", 2)],
            chain: None,
        };
        let outcome = state.create_stack(&pop("pop1"), &template).unwrap();
        let record = outcome.created().expect("fits");
        assert_eq!(record.id.as_str(), "st0001");
        assert_eq!(record.instances.len(), 2);
        assert_eq!(record.instances[0].0, "fw");
        assert_eq!(state.instance_count(), 2);
        assert_eq!(state.ledger(&pop("pop1")).unwrap().cpu_allocated_cus, 3);
        // Each instance priced per its units: 0.5 budget over 8 platform
        // CUs = 0.0625 per CU, and "app" holds 2 CUs.
        let app = state.instance(&record.instances[1].1).unwrap();
        assert_eq!(app.cpu_fraction, 0.125);
    }

    #[test]
    fn rejection_rolls_back_everything() {
        let mut state = platform();
        let before_ledger = state.ledger(&pop("pop1")).unwrap().clone();

        let template = StackTemplate {
            name: "toobig".into(),
            resources: vec![resource("a", 2), resource("b", 3)],
            chain: None,
        };
        let outcome = state.create_stack(&pop("pop1"), &template).unwrap();
        let (reason, failed) = outcome.rejection().expect("second resource exceeds 4 CUs");
        assert_eq!(reason, RejectReason::CpuExhausted);
        assert_eq!(failed, "b");

        assert_eq!(state.instance_count(), 0);
        assert_eq!(state.stacks().count(), 0);
        assert_eq!(state.ledger(&pop("pop1")).unwrap(), &before_ledger);
    }

    #[test]
    fn chained_stacks_install_their_chain() {
        let mut state = platform();
        let template = StackTemplate {
            name: "chained".into(),
            resources: vec![resource("a", 1), resource("b", 1)],
            chain: Some(ChainSpec {
                hops: vec!["a".into(), "b".into()],
                metric: PathMetric::FewestHops,
            }),
        };
        let outcome = state.create_stack(&pop("pop1"), &template).unwrap();
        let record = outcome.created().unwrap();
        let chain_id = record.chain.clone().expect("template declared a chain");
        let chain = state.chain(&chain_id).unwrap();
        assert_eq!(chain.hops.len(), 2);
        assert!(!state.flow_tables().is_empty());
    }

    #[test]
    fn stacks_are_scoped_to_their_pop() {
        let mut state = platform();
        let template = StackTemplate {
            name: "scoped".into(),
            resources: vec![resource("only", 1)],
            chain: None,
        };
        let outcome = state.create_stack(&pop("pop1"), &template).unwrap();
        let id = outcome.created().unwrap().id.clone();

        assert_eq!(state.stacks_in(&pop("pop1")).count(), 1);
        assert_eq!(state.stacks_in(&pop("pop2")).count(), 0);
        // Deleting through the wrong PoP is indistinguishable from a missing
        // stack.
        assert!(matches!(
            state.delete_stack(&pop("pop2"), &id),
            Err(Error::UnknownStack(_))
        ));
        // The right PoP deletes it and frees the ledger.
        let released = state.delete_stack(&pop("pop1"), &id).unwrap();
        assert_eq!(released.len(), 1);
        assert_eq!(state.ledger(&pop("pop1")).unwrap().cpu_allocated_cus, 0);
        assert!(matches!(
            state.delete_stack(&pop("pop1"), &id),
            Err(Error::UnknownStack(_))
        ));
    }

    #[test]
    fn deleting_a_chained_stack_removes_the_chain_first() {
        let mut state = platform();
        let template = StackTemplate {
            name: "chained".into(),
            resources: vec![resource("a", 1), resource("b", 1)],
            chain: Some(ChainSpec {
                hops: vec!["a".into(), "b".into()],
                metric: PathMetric::FewestHops,
            }),
        };
        let outcome = state.create_stack(&pop("pop1"), &template).unwrap();
        let record = outcome.created().unwrap().clone();
        state.delete_stack(&pop("pop1"), &record.id).unwrap();
        assert!(state.chains().next().is_none());
        assert!(state.flow_tables().is_empty());
        assert_eq!(state.instance_count(), 0);
    }

    #[test]
    fn templates_are_validated() {
        let dup = StackTemplate {
            name: "dup".into(),
            resources: vec![resource("x", 1), resource("x", 1)],
            chain: None,
        };
        assert!(dup.validate().is_err());

        let empty = StackTemplate {
            name: "empty".into(),
            resources: vec![],
            chain: None,
        };
        assert!(empty.validate().is_err());

        let dangling = StackTemplate {
            name: "dangling".into(),
            resources: vec![resource("x", 1)],
            chain: Some(ChainSpec {
                hops: vec!["x".into(), "ghost".into()],
                metric: PathMetric::FewestHops,
            }),
        };
        assert!(dangling.validate().is_err());
    }

    #[test]
    fn direct_release_of_a_member_updates_the_record() {
        let mut state = platform();
        let template = StackTemplate {
            name: "pair".into(),
            resources: vec![resource("a", 1), resource("b", 1)],
            chain: None,
        };
        let outcome = state.create_stack(&pop("pop1"), &template).unwrap();
        let record = outcome.created().unwrap().clone();

        state.release(&record.instances[0].1).unwrap();
        let remaining = state.stack(&record.id).unwrap();
        assert_eq!(remaining.instances.len(), 1);

        // Releasing the last member retires the record entirely.
        state.release(&record.instances[1].1).unwrap();
        assert!(state.stack(&record.id).is_none());
    }
}
